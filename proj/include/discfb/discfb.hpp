#pragma once

#include "discfb/blowup.hpp"
#include "discfb/coefficients.hpp"
#include "discfb/errors.hpp"
#include "discfb/grid.hpp"
#include "discfb/interpolation.hpp"
#include "discfb/parallel.hpp"
#include "discfb/penalty.hpp"
#include "discfb/polar_operator.hpp"
#include "discfb/profiles.hpp"
#include "discfb/solver.hpp"
#include "discfb/spruck.hpp"
