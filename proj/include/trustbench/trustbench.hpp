#pragma once

#include "trustbench/analysis.hpp"
#include "trustbench/conformal.hpp"
#include "trustbench/dataset.hpp"
#include "trustbench/error.hpp"
#include "trustbench/knn.hpp"
#include "trustbench/random.hpp"
#include "trustbench/simulation.hpp"
#include "trustbench/trial_log.hpp"
#include "trustbench/trust_metrics.hpp"
#include "trustbench/venn_abers.hpp"
