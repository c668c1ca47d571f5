#include "capfuse/prob.hpp"

#include <sstream>
#include <unordered_set>

#include "capfuse/util.hpp"
#include "json.hpp"

namespace capfuse {

std::unordered_map<std::string, Eigen::Index> ProbMatrix::row_index() const {
  std::unordered_map<std::string, Eigen::Index> idx;
  idx.reserve(sample_ids.size());
  for (std::size_t i = 0; i < sample_ids.size(); ++i)
    idx.emplace(sample_ids[i], static_cast<Eigen::Index>(i));
  return idx;
}

void validate(const ProbMatrix& m) {
  if (m.values.cols() != m.task.num_classes())
    throw LengthMismatch("matrix has " + std::to_string(m.values.cols()) + " columns, task has " +
                         std::to_string(m.task.num_classes()) + " classes");
  if (static_cast<std::size_t>(m.values.rows()) != m.sample_ids.size())
    throw LengthMismatch("matrix row count differs from sample id count");
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < m.sample_ids.size(); ++i) {
    if (!seen.insert(m.sample_ids[i]).second) throw DuplicateSampleId(m.sample_ids[i]);
    if (!on_simplex(m.values.row(static_cast<Eigen::Index>(i))))
      throw InvalidProbVector("row '" + m.sample_ids[i] + "' is not a probability vector");
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

std::string format_prob_matrix_csv(const ProbMatrix& m) {
  std::ostringstream out;
  out << "sample_id";
  for (const auto& name : m.task.class_names()) out << ',' << csv_escape(name);
  out << '\n';
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out << csv_escape(m.sample_ids[r]);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      out << ',' << format_significant(m.values(r, c), 9);
    out << '\n';
  }
  return out.str();
}

void write_prob_matrix(const std::filesystem::path& csv_path, const ProbMatrix& m) {
  validate(m);
  write_file_atomic(csv_path, format_prob_matrix_csv(m));
  nlohmann::ordered_json meta;
  meta["task_id"] = m.task.task_id();
  meta["split_name"] = m.split_name;
  meta["model_tag"] = m.model_tag;
  meta["trial_seed"] = m.trial_seed;
  write_file_atomic(sidecar_path(csv_path), meta.dump(2) + "\n");
}

ProbMatrix read_prob_matrix(const std::filesystem::path& csv_path) {
  const auto meta = nlohmann::json::parse(read_file(sidecar_path(csv_path)));
  const auto text = read_file(csv_path);
  auto lines = split(text, '\n');
  if (lines.empty() || lines[0].empty()) throw MalformedRow(1, "missing CSV header");
  auto header = csv_split(lines[0]);
  if (header.size() < 3 || header[0] != "sample_id")
    throw MalformedRow(1, "header must be sample_id followed by at least two classes");
  std::vector<std::string> classes(header.begin() + 1, header.end());
  TaskDefinition task(meta.at("task_id").get<std::string>(), classes);

  std::vector<std::string> ids;
  std::vector<ProbVector> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = csv_split(line);
    if (fields.size() != header.size())
      throw MalformedRow(i + 1, "expected " + std::to_string(header.size()) + " fields");
    ProbVector p(static_cast<Eigen::Index>(classes.size()));
    for (std::size_t c = 0; c < classes.size(); ++c) {
      try {
        p(static_cast<Eigen::Index>(c)) = std::stod(fields[c + 1]);
      } catch (const std::logic_error&) {
        throw MalformedRow(i + 1, "bad number '" + fields[c + 1] + "'");
      }
    }
    ids.push_back(fields[0]);
    rows.push_back(enforce_simplex(std::move(p)));
  }

  ProbMatrix m{std::move(task), meta.at("split_name").get<std::string>(), std::move(ids),
               Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()),
                               static_cast<Eigen::Index>(classes.size())),
               meta.at("model_tag").get<std::string>(), meta.at("trial_seed").get<std::int64_t>()};
  for (std::size_t r = 0; r < rows.size(); ++r)
    m.values.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  validate(m);
  return m;
}

}  // namespace capfuse
