#pragma once

// Umbrella header.

#include "cdb/config.hpp"
#include "cdb/dataset.hpp"
#include "cdb/difficulty.hpp"
#include "cdb/idx.hpp"
#include "cdb/losses.hpp"
#include "cdb/matrix.hpp"
#include "cdb/metrics.hpp"
#include "cdb/mlp.hpp"
#include "cdb/rng.hpp"
#include "cdb/runner.hpp"
#include "cdb/softmax.hpp"
