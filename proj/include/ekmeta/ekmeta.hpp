#pragma once

#include "common.hpp"
#include "config.hpp"
#include "discrete.hpp"
#include "ek.hpp"
#include "expr.hpp"
#include "landscape.hpp"
#include "lyapunov.hpp"
#include "means.hpp"
#include "measures.hpp"
#include "oracle1d.hpp"
#include "transport.hpp"
