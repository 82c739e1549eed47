#pragma once

// Umbrella header: the whole toolkit.
//
// rational  - exact quarter-length arithmetic
// model     - scores, tracks, events, bends, validation
// tabio     - text and structured interchange formats
// bendsem   - string-motion labels and the bend-less simplification
// featex    - beat strength, key helpers, 33-dim feature vectors, dumps
// learn     - decision trees, oversampling, forests, model files
// evalstats - dedup, track split, metrics, corpus statistics
// cli       - command implementations behind the bendlab binary

#include "bendlab/rational.hpp"
#include "bendlab/model.hpp"
#include "bendlab/tabio.hpp"
#include "bendlab/bendsem.hpp"
#include "bendlab/featex.hpp"
#include "bendlab/learn.hpp"
#include "bendlab/evalstats.hpp"
#include "bendlab/cli.hpp"
