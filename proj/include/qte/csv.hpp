#pragma once

#include <iosfwd>
#include <string>

#include "qte/data.hpp"

namespace qte {

// Reads a dataset with a header row. Required columns: `y` (float),
// `a` (0/1), `s` (any token); every other column is a float covariate, in
// file order. Empty fields and NA/NaN markers are rejected with DataError.
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::string& path);

void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace qte
