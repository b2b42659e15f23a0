#pragma once

#include "lpnmf/align.hpp"
#include "lpnmf/error.hpp"
#include "lpnmf/groups.hpp"
#include "lpnmf/io.hpp"
#include "lpnmf/matrix.hpp"
#include "lpnmf/nmf.hpp"
#include "lpnmf/nnls.hpp"
#include "lpnmf/rng.hpp"
#include "lpnmf/schema.hpp"
#include "lpnmf/stats.hpp"
#include "lpnmf/svg.hpp"
#include "lpnmf/synth.hpp"
