#pragma once

#include <string>
#include <vector>

#include "rerand/population.hpp"

namespace rerand {

// Population files: one header row, one row per unit. Columns named `y1`
// and `y0` (when both are present) carry the potential outcomes; every other
// column is a covariate, kept in file order. Any non-finite or unparsable
// cell is a load error.
struct PopulationCsv {
  Population population;
  std::vector<std::string> covariate_names;
};

// n_treated < 0 selects the balanced default floor(N / 2).
PopulationCsv load_population_csv(const std::string& path, int n_treated = -1);

void save_population_csv(const std::string& path, const Population& pop,
                         const std::vector<std::string>& covariate_names);

// single numeric column with a header line
std::vector<double> load_vector_csv(const std::string& path);

}  // namespace rerand
