#include "pets/common.hpp"

#include <sstream>

namespace pets {

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_same_shape(const std::vector<std::int64_t>& a,
                      const std::vector<std::int64_t>& b,
                      const std::string& where) {
  if (a != b) {
    throw ShapeError(where + ": shapes " + shape_str(a) + " and " +
                     shape_str(b) + " do not match");
  }
}

}  // namespace pets
