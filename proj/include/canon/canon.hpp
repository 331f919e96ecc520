#pragma once

// Umbrella header for the canonicalization engine.

#include "canon/backends.hpp"
#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/gp.hpp"
#include "canon/image.hpp"
#include "canon/optimize.hpp"
#include "canon/parallel.hpp"
#include "canon/pipeline.hpp"
#include "canon/png_io.hpp"
#include "canon/serialize.hpp"
#include "canon/transforms.hpp"
