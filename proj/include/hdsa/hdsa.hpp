// Umbrella header.
#pragma once

#include "hdsa/analysis.hpp"
#include "hdsa/fem1d.hpp"
#include "hdsa/indices.hpp"
#include "hdsa/kkt.hpp"
#include "hdsa/linalg.hpp"
#include "hdsa/optimizer.hpp"
#include "hdsa/oracle.hpp"
#include "hdsa/parallel.hpp"
#include "hdsa/problem.hpp"
#include "hdsa/problems/advdiff_inversion.hpp"
#include "hdsa/problems/decorators.hpp"
#include "hdsa/problems/diffusion_control.hpp"
#include "hdsa/problems/logistic.hpp"
#include "hdsa/random.hpp"
#include "hdsa/randeig.hpp"
