#pragma once

#include <cstddef>

#include "lino/data.hpp"
#include "lino/model.hpp"

namespace lino::testing {

/// Noiseless per-channel linear trends split so the train span holds exactly
/// `train_windows` windows.
inline data::WindowedDataset linear_trend_dataset(std::size_t channels, std::size_t lookback, std::size_t horizon,
                                                  std::size_t train_windows) {
  const std::size_t train = lookback + horizon + train_windows - 1;
  const std::size_t val = horizon + 4, test = horizon + 4;
  const std::size_t length = train + val + test;
  data::RawSeries s;
  s.values = Tensor({length, channels});
  for (std::size_t c = 0; c < channels; ++c) {
    s.channel_names.push_back("c" + std::to_string(c));
    const double slope = 0.05 * static_cast<double>(c + 1) * (c % 2 ? -1.0 : 1.0);
    for (std::size_t t = 0; t < length; ++t) s.values[t * channels + c] = 1.0 + slope * static_cast<double>(t);
  }
  return data::make_dataset(s, data::SplitSpec::from_counts(train, val, test), lookback, horizon);
}

/// Linear-only model: one level, No block removed.
inline LiNoConfig pure_li_config(std::size_t channels, std::size_t lookback, std::size_t horizon, std::size_t dim) {
  LiNoConfig c;
  c.channels = channels;
  c.lookback = lookback;
  c.horizon = horizon;
  c.dim = dim;
  c.blocks = 1;
  c.ablation.no_no = true;
  return c;
}

}  // namespace lino::testing
