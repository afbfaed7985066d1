#pragma once

#include "mknn/classify.hpp"
#include "mknn/dataset.hpp"
#include "mknn/errors.hpp"
#include "mknn/graph.hpp"
#include "mknn/metrics.hpp"
#include "mknn/online.hpp"
#include "mknn/optimize.hpp"
#include "mknn/rng.hpp"
#include "mknn/trw.hpp"
