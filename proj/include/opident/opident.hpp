#pragma once

#include "opident/continuation.hpp"
#include "opident/errors.hpp"
#include "opident/experiments.hpp"
#include "opident/fields.hpp"
#include "opident/inverse_local.hpp"
#include "opident/io.hpp"
#include "opident/linalg.hpp"
#include "opident/newton.hpp"
#include "opident/propagator.hpp"
#include "opident/random.hpp"
#include "opident/tolerances.hpp"
