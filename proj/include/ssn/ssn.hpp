#pragma once

#include "ssn/errors.hpp"
#include "ssn/dataset.hpp"
#include "ssn/model.hpp"
#include "ssn/sampling.hpp"
#include "ssn/regularize.hpp"
#include "ssn/linsolve.hpp"
#include "ssn/linesearch.hpp"
#include "ssn/theory.hpp"
#include "ssn/solvers.hpp"
#include "ssn/data.hpp"
#include "ssn/bench.hpp"
