#pragma once

// Umbrella header for the mmgee library: quasi-likelihood (GEE) estimation
// for multivariate longitudinal marginal models with shared or
// response-specific coefficients.

#include "mmgee/correlation.hpp"
#include "mmgee/dataset.hpp"
#include "mmgee/design.hpp"
#include "mmgee/errors.hpp"
#include "mmgee/family.hpp"
#include "mmgee/fit_io.hpp"
#include "mmgee/gee.hpp"
#include "mmgee/inference.hpp"
#include "mmgee/math.hpp"
#include "mmgee/rng.hpp"
#include "mmgee/simulate.hpp"
