#pragma once

#include "curematch/baselines.hpp"
#include "curematch/checks.hpp"
#include "curematch/csv.hpp"
#include "curematch/data.hpp"
#include "curematch/distributions.hpp"
#include "curematch/error.hpp"
#include "curematch/harness.hpp"
#include "curematch/logistic.hpp"
#include "curematch/matching.hpp"
#include "curematch/metric.hpp"
#include "curematch/mixture_cure.hpp"
#include "curematch/pipeline.hpp"
#include "curematch/rng.hpp"
#include "curematch/simulation.hpp"
#include "curematch/survival.hpp"
