// Umbrella header.
#pragma once

#include "plhmm/basis.hpp"
#include "plhmm/bench.hpp"
#include "plhmm/duration.hpp"
#include "plhmm/errors.hpp"
#include "plhmm/generate.hpp"
#include "plhmm/io.hpp"
#include "plhmm/lattice.hpp"
#include "plhmm/logprob.hpp"
#include "plhmm/model.hpp"
#include "plhmm/recognize.hpp"
#include "plhmm/special.hpp"
#include "plhmm/train.hpp"
