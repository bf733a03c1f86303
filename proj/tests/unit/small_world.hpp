#pragma once

#include "duohash/synthgen.hpp"

inline duohash::WorldConfig small_world(std::uint64_t seed = 3) {
  duohash::WorldConfig c;
  c.d_in = 12;
  c.d_identity = 6;
  c.n_primary = 40;
  c.n_ref_val = 20;
  c.n_query_val = 10;
  c.n_ref_test = 20;
  c.n_query_test = 10;
  c.query_match_fraction = 0.5;
  c.n_benign = 15;
  c.n_attacker_pool = 8;
  c.n_identities = 9;
  c.n_targets = 1;
  c.images_per_identity = 14;
  c.n_target_train = 8;
  c.n_target_val = 3;
  c.n_nontarget_train = 3;
  c.n_nontarget_val = 2;
  c.identity_scale = 1.0;
  c.seed = seed;
  return c;
}
