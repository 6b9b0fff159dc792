#include "dcn/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dcn {

void write_matrix_csv(const std::filesystem::path& path, const Tensor& m) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m.at(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

Tensor read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ls, cell, ',')) {
      data.push_back(std::stod(cell));
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw InputError("ragged CSV " + path.string());
    ++rows;
  }
  if (rows == 0) throw InputError("empty CSV " + path.string());
  return Tensor({rows, cols}, std::move(data));
}

std::string encode_pgm(const Tensor& m) {
  const std::size_t h = m.rows(), w = m.cols();
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t r = 0; r < h; ++r) {
    double mx = 0.0;
    for (std::size_t c = 0; c < w; ++c) mx = std::max(mx, m.at(r, c));
    for (std::size_t c = 0; c < w; ++c) {
      const double v = mx > 0.0 ? std::clamp(m.at(r, c) / mx, 0.0, 1.0) : 0.0;
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const std::string bytes = encode_pgm(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void export_attention(const DcnModel& model, const ModelInput& input, const std::filesystem::path& out_dir,
                      std::size_t index) {
  const auto dir = out_dir / ("sample" + std::to_string(index));
  std::filesystem::create_directories(dir);
  Graph g;
  const ForwardResult r = model.forward(g, input);
  auto both = [&](const std::string& name, const Tensor& m) {
    write_matrix_csv(dir / (name + ".csv"), m);
    write_pgm(dir / (name + ".pgm"), m);
  };
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    both("layer" + std::to_string(l) + "_A_Q", r.layers[l].maps.A_Q.value());
    both("layer" + std::to_string(l) + "_A_V", r.layers[l].maps.A_V.value());
  }
  // weights as single-row maps
  both("alpha_q", r.question_summary.alpha.value().transposed());
  both("alpha_v", r.image_summary.alpha.value().transposed());
  both("layer_alpha", r.layer_alpha.value().transposed());
  write_matrix_csv(dir / "scores.csv", r.scores.value().transposed());
}

}  // namespace dcn
