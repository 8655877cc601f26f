// Umbrella header.
#pragma once

#include "kslab/config/io.hpp"
#include "kslab/correlator.hpp"
#include "kslab/ksop.hpp"
#include "kslab/model.hpp"
#include "kslab/prufer.hpp"
#include "kslab/spectral.hpp"
