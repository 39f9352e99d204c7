#include "swinfree/windowing.hpp"

namespace swinfree {

RelPosIndex relative_position_index(Index m) {
  if (m < 1) throw ConfigError("window size must be >= 1");
  RelPosIndex r;
  r.window = m;
  const Index t = m * m;
  const Index side = 2 * m - 1;
  r.index.resize(static_cast<std::size_t>(t * t));
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < t; ++j) {
      const Index dy = i / m - j / m + (m - 1);
      const Index dx = i % m - j % m + (m - 1);
      r.index[static_cast<std::size_t>(i * t + j)] = static_cast<int>(dy * side + dx);
    }
  return r;
}

}  // namespace swinfree
