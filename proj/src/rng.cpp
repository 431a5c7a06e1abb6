#include "scorelab/rng.hpp"

namespace scorelab {

static_assert(stream_seed(0, StreamDomain::trajectories, 0) !=
              stream_seed(0, StreamDomain::trajectories, 1));
static_assert(stream_seed(7, StreamDomain::trajectories, 3) !=
              stream_seed(7, StreamDomain::sampler, 3));

}  // namespace scorelab
