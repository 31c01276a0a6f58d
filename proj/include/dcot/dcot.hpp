#ifndef DCOT_DCOT_HPP
#define DCOT_DCOT_HPP

#include "error.hpp"
#include "text.hpp"
#include "rng.hpp"
#include "config.hpp"
#include "types.hpp"
#include "vocab.hpp"
#include "model.hpp"
#include "scripted.hpp"
#include "discriminator.hpp"
#include "haro.hpp"
#include "backend.hpp"
#include "controller.hpp"
#include "assembly.hpp"
#include "decoder.hpp"
#include "rational.hpp"
#include "oracles.hpp"
#include "suite.hpp"
#include "harness.hpp"

#endif
