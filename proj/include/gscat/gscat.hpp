#pragma once

// Umbrella header for the geometric scattering library.

#include "gscat/core.hpp"
#include "gscat/deformation.hpp"
#include "gscat/experiments.hpp"
#include "gscat/filters.hpp"
#include "gscat/io.hpp"
#include "gscat/manifold.hpp"
#include "gscat/mesh.hpp"
#include "gscat/scattering.hpp"
#include "gscat/spectral_ops.hpp"
