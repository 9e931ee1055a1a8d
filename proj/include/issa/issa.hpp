#pragma once

#include "issa/config.hpp"
#include "issa/matrix_ops.hpp"
#include "issa/system.hpp"
#include "issa/structure.hpp"
#include "issa/exponent.hpp"
#include "issa/trajectory.hpp"
#include "issa/serialization.hpp"
