#pragma once

#include <span>
#include <vector>

#include "silo/seqcore.hpp"

namespace silo {

struct Prediction {
  double mu = 0.0;
  double sigma = 0.0;
};

// Mean and population standard deviation of ensemble member outputs.
Prediction combine_members(std::span<const double> outputs);

// Anything that can rank candidates: the trained ensemble or a noisy oracle.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<Prediction> predict_batch(std::span<const Sequence> xs) const = 0;
  Prediction predict(const Sequence& x) const { return predict_batch(std::span(&x, 1)).front(); }
};

}  // namespace silo
