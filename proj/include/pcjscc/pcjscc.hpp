// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pcjscc/channel.hpp"
#include "pcjscc/dataset.hpp"
#include "pcjscc/geometry.hpp"
#include "pcjscc/io.hpp"
#include "pcjscc/metrics.hpp"
#include "pcjscc/model.hpp"
#include "pcjscc/plot.hpp"
#include "pcjscc/sweep.hpp"
#include "pcjscc/training.hpp"
