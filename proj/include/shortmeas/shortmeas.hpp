#pragma once

#include "shortmeas/diagnostics.hpp"
#include "shortmeas/dynamics.hpp"
#include "shortmeas/error.hpp"
#include "shortmeas/experiments.hpp"
#include "shortmeas/hilbert.hpp"
#include "shortmeas/integrator.hpp"
#include "shortmeas/models.hpp"
#include "shortmeas/parallel.hpp"
#include "shortmeas/shorttime.hpp"
#include "shortmeas/tomography.hpp"
