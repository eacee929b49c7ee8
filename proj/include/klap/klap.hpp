#pragma once

#include "klap/benchmarks.hpp"
#include "klap/errors.hpp"
#include "klap/lbfgs.hpp"
#include "klap/linalg.hpp"
#include "klap/lti_system.hpp"
#include "klap/optimizer.hpp"
#include "klap/passivity.hpp"
