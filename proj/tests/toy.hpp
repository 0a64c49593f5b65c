#pragma once

#include "mlf/data.hpp"
#include "mlf/model.hpp"

namespace mlf::testing {

/// S=2 periods (4, 8), 4 patches, r=2, D=4, H=2, E=2, m=2.
inline MlfConfig toy_config() {
  MlfConfig c;
  c.period_lengths = {4, 8};
  c.horizon = 2;
  c.patch_count = 4;
  c.squeeze_factor = 2;
  c.d_model = 4;
  c.n_heads = 2;
  c.n_blocks = 2;
  c.conv_filters = 2;
  c.batch_size = 8;
  c.epochs = 1;
  return c;
}

/// `count` windows cut from a smooth univariate series.
inline std::vector<MultiPeriodWindow> trend_windows(const MlfConfig& c, std::size_t count,
                                                    double slope = 0.02) {
  SeriesDataset ds;
  ds.channel_names = {"x"};
  ds.length = count + c.longest() + c.horizon - 1;
  for (std::size_t t = 0; t < ds.length; ++t) {
    ds.values.push_back(slope * static_cast<double>(t) - 1.0);
    ds.timestamps.push_back(std::to_string(t));
  }
  return sample_windows(ds, {0, ds.length}, c.period_lengths, c.horizon);
}

inline std::vector<const MultiPeriodWindow*> pointers(const std::vector<MultiPeriodWindow>& w) {
  std::vector<const MultiPeriodWindow*> out;
  for (const auto& x : w) out.push_back(&x);
  return out;
}

}  // namespace mlf::testing
