// Umbrella header: the whole library.
#pragma once

#include "gradmag/core.hpp"
#include "gradmag/activation.hpp"
#include "gradmag/gradnet.hpp"
#include "gradmag/quadrature.hpp"
#include "gradmag/magnetics.hpp"
#include "gradmag/training.hpp"
#include "gradmag/inversion.hpp"
#include "gradmag/dataio.hpp"
#include "gradmag/loci.hpp"
#include "gradmag/dynamics.hpp"
