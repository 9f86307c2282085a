#pragma once

// Umbrella header: causal scoring and repair of chain-of-thought reasoning
// traces, with a deterministic oracle backend for desk-scale verification.

#include "caucot/backend.hpp"
#include "caucot/causalize.hpp"
#include "caucot/chain.hpp"
#include "caucot/config.hpp"
#include "caucot/errors.hpp"
#include "caucot/metrics.hpp"
#include "caucot/pipeline.hpp"
#include "caucot/prompts.hpp"
#include "caucot/remote.hpp"
#include "caucot/scoring.hpp"
#include "caucot/synth.hpp"
#include "caucot/version.hpp"
