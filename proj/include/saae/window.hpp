#pragma once

#include <Eigen/Dense>

#include <vector>

namespace saae {

// One fixed-length multichannel segment. `data` is T x Ch (one column per
// sensor channel); labels are 1-based class ids.
struct SignalWindow {
  Eigen::MatrixXd data;
  int subject = 0;
  int label = 0;

  int length() const { return static_cast<int>(data.rows()); }
  int channels() const { return static_cast<int>(data.cols()); }
};

using WindowSet = std::vector<SignalWindow>;

}  // namespace saae
