#pragma once

#include "kslab/core/instances.hpp"

namespace kslab {
namespace testing = instances;
}
