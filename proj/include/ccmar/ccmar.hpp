#pragma once

// Umbrella header for the full library.

#include "ccmar/version.hpp"
#include "ccmar/error.hpp"
#include "ccmar/numeric.hpp"
#include "ccmar/rng.hpp"
#include "ccmar/quadrature.hpp"
#include "ccmar/records.hpp"
#include "ccmar/terms.hpp"
#include "ccmar/glm.hpp"
#include "ccmar/beta_mle.hpp"
#include "ccmar/lasso.hpp"
#include "ccmar/coefficients.hpp"
#include "ccmar/nuisance.hpp"
#include "ccmar/estimators.hpp"
#include "ccmar/dgp.hpp"
#include "ccmar/harness.hpp"
#include "ccmar/report.hpp"
#include "ccmar/scenario_file.hpp"
