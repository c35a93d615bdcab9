#pragma once

#include "nethawkes/array.hpp"
#include "nethawkes/benchmark.hpp"
#include "nethawkes/core.hpp"
#include "nethawkes/eval.hpp"
#include "nethawkes/gibbs.hpp"
#include "nethawkes/map.hpp"
#include "nethawkes/netprior.hpp"
#include "nethawkes/parallel.hpp"
#include "nethawkes/random.hpp"
#include "nethawkes/simulate.hpp"
#include "nethawkes/special.hpp"
#include "nethawkes/version.hpp"
#include "nethawkes/vi.hpp"
