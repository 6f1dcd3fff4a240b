#pragma once

// Umbrella header.

#include "gztreg/errors.hpp"
#include "gztreg/matcalc.hpp"
#include "gztreg/gzt.hpp"
#include "gztreg/model.hpp"
#include "gztreg/likelihood.hpp"
#include "gztreg/inference.hpp"
#include "gztreg/simulate.hpp"
#include "gztreg/io.hpp"
#include "gztreg/selfcheck.hpp"
