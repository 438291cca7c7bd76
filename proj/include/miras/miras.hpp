#pragma once

#include "miras/bias.hpp"
#include "miras/chunked.hpp"
#include "miras/error.hpp"
#include "miras/finite_difference.hpp"
#include "miras/layer.hpp"
#include "miras/memory.hpp"
#include "miras/models.hpp"
#include "miras/optimizer.hpp"
#include "miras/reference.hpp"
#include "miras/retention.hpp"
#include "miras/rng.hpp"
#include "miras/signals.hpp"
#include "miras/tensor.hpp"
#include "miras/tensor_io.hpp"
