#include "dhg/ntu25.hpp"

namespace dhg {

KinematicTree ntu25_tree() {
  KinematicTree tree;
  tree.parent = {0, 0, 20, 2, 20, 4, 5, 6, 20, 8, 9, 10, 0, 12, 13, 14, 0, 16, 17, 18, 1, 7, 7, 11, 11};
  tree.names = {"spine_base",     "spine_mid",     "neck",          "head",           "left_shoulder",
                "left_elbow",     "left_wrist",    "left_hand",     "right_shoulder", "right_elbow",
                "right_wrist",    "right_hand",    "left_hip",      "left_knee",      "left_ankle",
                "left_foot",      "right_hip",     "right_knee",    "right_ankle",    "right_foot",
                "spine_shoulder", "left_hand_tip", "left_thumb",    "right_hand_tip", "right_thumb"};
  return tree;
}

Hypergraph ntu25_hypergraph() {
  return Hypergraph::make(kNtuJoints, {{0, 1, 2, 3, 20},
                                       {4, 5, 6, 7, 21, 22},
                                       {8, 9, 10, 11, 23, 24},
                                       {12, 13, 14, 15},
                                       {16, 17, 18, 19},
                                       {7, 11, 15, 19}});
}

GraphTopology ntu25_skeleton_graph() {
  const KinematicTree tree = ntu25_tree();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (tree.parent[i] != i) edges.emplace_back(i, tree.parent[i]);
  return GraphTopology::from_edges(kNtuJoints, edges);
}

}  // namespace dhg
