// Copyright 2026 The bwx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tensor.h"

#include <algorithm>
#include <limits>

namespace bwx::tensor {

double mol_step_log_prob(const double *row, int k, double x, MolStepScratch &scratch) {
  scratch.log_w.resize(k);
  scratch.logp_i.resize(k);
  scratch.bins.resize(k);

  // log softmax over the logits
  double max_logit = row[0];
  for (int i = 1; i < k; ++i) max_logit = std::max(max_logit, row[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) z += std::exp(row[i] - max_logit);
  const double log_z = max_logit + std::log(z);
  for (int i = 0; i < k; ++i) scratch.log_w[i] = row[i] - log_z;

  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const double mu = row[k + i];
    const double s = std::exp(std::max(row[2 * k + i], kLogScaleMin));
    scratch.bins[i] = detail::bin_log_prob(x, mu, s, kMolBinWidth);
    scratch.logp_i[i] = scratch.bins[i].logp;
    best = std::max(best, scratch.log_w[i] + scratch.logp_i[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < k; ++i)
    acc += std::exp(scratch.log_w[i] + scratch.logp_i[i] - best);
  return best + std::log(acc);
}

double mol_log_prob(double x, std::span<const double> params, int components) {
  if (components < 1 || static_cast<int>(params.size()) != 3 * components)
    raise(ErrorCode::kInvalidArgument, "mol_log_prob: params must hold 3*components values");
  for (double v : params)
    if (!std::isfinite(v))
      raise(ErrorCode::kInvalidArgument, "mol_log_prob: non-finite parameter");
  MolStepScratch scratch;
  return mol_step_log_prob(params.data(), components, x, scratch);
}

}  // namespace bwx::tensor
