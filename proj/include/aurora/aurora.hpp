#pragma once

#include "aurora/error.hpp"
#include "aurora/estimators.hpp"
#include "aurora/io.hpp"
#include "aurora/knn.hpp"
#include "aurora/ols.hpp"
#include "aurora/oracles.hpp"
#include "aurora/parallel.hpp"
#include "aurora/replicate.hpp"
#include "aurora/simlab.hpp"
