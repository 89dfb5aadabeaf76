#pragma once

#include "dulqa/bench.hpp"
#include "dulqa/config.hpp"
#include "dulqa/errors.hpp"
#include "dulqa/hypersearch.hpp"
#include "dulqa/io.hpp"
#include "dulqa/ising.hpp"
#include "dulqa/linalg.hpp"
#include "dulqa/lqa.hpp"
#include "dulqa/parallel.hpp"
#include "dulqa/rng.hpp"
#include "dulqa/train.hpp"
#include "dulqa/version.hpp"
