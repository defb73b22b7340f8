#pragma once

// Umbrella header.
#include "osim/baselines.hpp"
#include "osim/config.hpp"
#include "osim/error.hpp"
#include "osim/harness.hpp"
#include "osim/image.hpp"
#include "osim/inference.hpp"
#include "osim/io.hpp"
#include "osim/json.hpp"
#include "osim/metric.hpp"
#include "osim/saliency.hpp"
#include "osim/scoring.hpp"
#include "osim/study.hpp"
#include "osim/backends/cell_features.hpp"
#include "osim/backends/fixture_backend.hpp"
#include "osim/backends/onnx_backend.hpp"
