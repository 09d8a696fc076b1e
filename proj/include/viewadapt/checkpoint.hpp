#pragma once

#include <string>

#include "viewadapt/params.hpp"

namespace va {

// Binary checkpoint: magic "ADLA", version u16, then records of
// (name length u16, UTF-8 name, rank u8, dims u32 LE, payload f32 LE)
// until EOF. Round-trips are bit-exact.
constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore<float>& params, const std::string& path);
ParamStore<float> load_checkpoint(const std::string& path);

} // namespace va
