#pragma once

#include "bytes.hpp"
#include "count_sketch.hpp"
#include "emd_sketch.hpp"
#include "exact.hpp"
#include "generators.hpp"
#include "hash.hpp"
#include "hypercube.hpp"
#include "mst_sketch.hpp"
#include "offline.hpp"
#include "quadtree.hpp"
#include "report.hpp"
#include "sketches.hpp"
#include "sparse_recovery.hpp"
#include "stable.hpp"
#include "stream.hpp"
#include "turnstile.hpp"
#include "universe.hpp"
