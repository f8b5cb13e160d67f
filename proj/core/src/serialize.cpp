#include "rerand/serialize.hpp"

#include <fstream>

#include <json.hpp>

#include "rerand/errors.hpp"

namespace rerand {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty())
    throw Error(ErrorCode::io_error, "expected a non-empty matrix");
  const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i) {
    const json& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != nc)
      throw Error(ErrorCode::io_error, "ragged matrix rows");
    for (Eigen::Index j = 0; j < nc; ++j)
      m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = arr.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

}  // namespace

std::string criterion_to_json(const BalanceCriterion& criterion, int indent) {
  json doc;
  doc["kind"] = criterion_kind_name(criterion.kind);
  doc["p"] = criterion.lambda_matrix.rows();
  doc["n"] = criterion.n;
  doc["alpha"] = criterion.alpha;
  doc["lambda_matrix"] = matrix_to_json(criterion.lambda_matrix);
  doc["threshold"] = criterion.threshold;
  doc["spectrum"] = vector_to_json(criterion.spectrum.lambdas);
  doc["threshold_spec"] = {
      {"xi", criterion.threshold_spec.xi},
      {"method", criterion.threshold_spec.method == ThresholdMethod::analytic_chisq
                     ? "analytic-chisq"
                     : "weighted-chisq-mc"},
      {"mc_draws", criterion.threshold_spec.mc_draws},
      {"mc_seed", criterion.threshold_spec.mc_seed},
      {"mc_stderr", criterion.threshold_spec.mc_stderr},
  };
  return doc.dump(indent);
}

BalanceCriterion criterion_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io_error, std::string("criterion JSON parse error: ") + e.what());
  }
  try {
    BalanceCriterion criterion;
    criterion.kind = criterion_kind_from_name(doc.at("kind").get<std::string>());
    criterion.n = doc.at("n").get<int>();
    criterion.alpha = doc.at("alpha").get<double>();
    criterion.lambda_matrix = matrix_from_json(doc.at("lambda_matrix"));
    criterion.threshold = doc.at("threshold").get<double>();
    criterion.spectrum.lambdas = vector_from_json(doc.at("spectrum"));
    const json& ts = doc.at("threshold_spec");
    criterion.threshold_spec.xi = ts.at("xi").get<double>();
    criterion.threshold_spec.method =
        ts.at("method").get<std::string>() == "analytic-chisq"
            ? ThresholdMethod::analytic_chisq
            : ThresholdMethod::weighted_chisq_mc;
    criterion.threshold_spec.mc_draws = ts.at("mc_draws").get<int>();
    criterion.threshold_spec.mc_seed = ts.at("mc_seed").get<std::uint64_t>();
    criterion.threshold_spec.mc_stderr = ts.at("mc_stderr").get<double>();
    if (criterion.lambda_matrix.rows() != criterion.lambda_matrix.cols())
      throw Error(ErrorCode::io_error, "lambda_matrix must be square");
    return criterion;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io_error, std::string("criterion JSON is missing fields: ") + e.what());
  }
}

BalanceCriterion load_criterion_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return criterion_from_json(text);
}

}  // namespace rerand
