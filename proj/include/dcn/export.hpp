#pragma once

#include <filesystem>
#include <string>

#include "dcn/model.hpp"

namespace dcn {

// One CSV line per matrix row.
void write_matrix_csv(const std::filesystem::path& path, const Tensor& m);
Tensor read_matrix_csv(const std::filesystem::path& path);

// 8-bit binary PGM ("P5\n<w> <h>\n255\n") with every row scaled to [0, 255]
// by its own maximum.
std::string encode_pgm(const Tensor& m);
void write_pgm(const std::filesystem::path& path, const Tensor& m);

// Writes, under out_dir/sample<index>/: layer<l>_A_Q / layer<l>_A_V maps,
// alpha_q / alpha_v summary weights, layer_alpha weights and scores, each as
// .csv and (except scores) .pgm.
void export_attention(const DcnModel& model, const ModelInput& input, const std::filesystem::path& out_dir,
                      std::size_t index);

}  // namespace dcn
