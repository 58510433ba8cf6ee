#pragma once

#include <memory>
#include <string>

#include "hmlab/expr.hpp"

namespace hmlab::detail {

struct Node {
  Op op = Op::Constant;
  double value = 0.0;
  Rational exponent;
  int index = -1;
  std::string name;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
  std::size_t hash = 0;
};

// Fills in the structural hash and freezes the node.
std::shared_ptr<const Node> make_node(Node n);

}  // namespace hmlab::detail
