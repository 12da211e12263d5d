#pragma once

// Built-in 25-joint NTU RGB+D layout; data/ntu25_*.txt carry the same content.

#include "dhg/hypergraph.hpp"
#include "dhg/skeleton.hpp"

namespace dhg {

inline constexpr std::size_t kNtuJoints = 25;

KinematicTree ntu25_tree();
Hypergraph ntu25_hypergraph();
// One undirected edge per bone of the kinematic tree.
GraphTopology ntu25_skeleton_graph();

}  // namespace dhg
