#pragma once

#include "sicglmm/errors.hpp"
#include "sicglmm/family.hpp"
#include "sicglmm/linalg.hpp"
#include "sicglmm/covariance.hpp"
#include "sicglmm/sic.hpp"
#include "sicglmm/spatial.hpp"
#include "sicglmm/quadrature.hpp"
#include "sicglmm/oracle.hpp"
#include "sicglmm/estimate.hpp"
#include "sicglmm/simulation.hpp"
#include "sicglmm/instances.hpp"
#include "sicglmm/io.hpp"
#include "sicglmm/commands.hpp"
