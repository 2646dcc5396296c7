#include "almcflow/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace almcflow {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_ensemble_csv(const std::filesystem::path& path, const Ensemble& e, std::uint64_t seed) {
  std::string out = "particle";
  for (std::size_t j = 0; j < e.dim(); ++j) out += ",coord_" + std::to_string(j);
  out += ",log_weight\n";
  for (std::size_t i = 0; i < e.size(); ++i) {
    out += std::to_string(i);
    for (double v : e.positions.row(i)) {
      out += ',';
      append_double(out, v);
    }
    out += ',';
    append_double(out, e.log_weights[i]);
    out += '\n';
  }
  write_text(path, out);
  nlohmann::ordered_json meta{
      {"n", e.size()}, {"d", e.dim()}, {"step_index", e.step_index}, {"seed", seed}};
  write_text(sidecar(path), meta.dump(2) + "\n");
}

void write_samples_csv(const std::filesystem::path& path, const Points& x, std::uint64_t seed) {
  write_ensemble_csv(path, Ensemble::uniform(x), seed);
}

Ensemble read_ensemble_csv(const std::filesystem::path& path) {
  const auto meta = nlohmann::json::parse(read_text(sidecar(path)));
  const std::size_t n = meta.at("n").get<std::size_t>();
  const std::size_t d = meta.at("d").get<std::size_t>();
  Ensemble e(Points(n, d), std::vector<double>(n), meta.at("step_index").get<std::size_t>());
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);  // header
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated ensemble file " + path.string());
    const char* p = line.data();
    const char* end = p + line.size();
    auto next_field = [&](double& v) {
      const char* comma = std::find(p, end, ',');
      auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc()) throw std::runtime_error("bad number in " + path.string());
      p = comma == end ? end : comma + 1;
    };
    double idx = 0;
    next_field(idx);
    for (std::size_t j = 0; j < d; ++j) next_field(e.positions(i, j));
    next_field(e.log_weights[i]);
  }
  return e;
}

}  // namespace almcflow
