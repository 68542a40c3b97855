#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "frameslide/controller.hpp"
#include "frameslide/eval.hpp"
#include "frameslide/manifest.hpp"
#include "frameslide/micro.hpp"
#include "frameslide/toyworld.hpp"

TEST_CASE("headers compile and a trivial pipeline runs") {
  using namespace frameslide;
  NoiseSchedule sched = make_linear_schedule(10, 1e-4, 0.1);
  GaussianWorldSpec world{4, 0.5, 1.0, 0.0};
  AnalyticDenoiser den(world, sched);
  GenerationConfig cfg;
  cfg.T = 10;
  cfg.K = 2;
  cfg.M = 2;
  Rng rng(1);
  FrameQueue q = FrameQueue::repeat(Tensor(1, 1, 4), cfg.K);
  LatentFrame f = generate_next_frame(den, sched, q, ConditionLabel::null(), cfg, rng);
  CHECK(f.all_finite());
}
