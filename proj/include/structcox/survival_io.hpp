#pragma once

#include <string>
#include <string_view>

#include "structcox/survival.hpp"

namespace structcox {

/// Parses `id,start,stop,event,<covariates...>` delimited text with a header
/// row. Errors carry the offending line number.
SurvivalDataset parse_dataset(std::string_view text);
SurvivalDataset read_dataset(const std::string& path);

std::string write_dataset(const SurvivalDataset& data);

} // namespace structcox
