#pragma once

#include <cstdint>
#include <string>

#include "rspde/ensemble.hpp"
#include "rspde/rough_path.hpp"

namespace rspde {

// Archive layout (bit-exact):
//   magic "RSPD1" (5 bytes)
//   u32 LE format version (= 1)
//   u32 LE x 6: n, K, channels (e or d), N (grid steps), M, flags
//   f64 LE horizon T
//   payload: f64 LE array; field ensembles store (sample, node, channel,
//     frequency) row-major with (re, im) innermost; lift archives store the
//     first-level section (sample, node, component) followed by the
//     second-level consecutive-step section (sample, step, row, col)
//   u64 LE FNV-1a checksum over the payload bytes
//
// flags: bit0 real-valued, bit1 adapted, bit2 Ito enhancement,
//        bit3 broadcast, bits 8..11 kind (0 field ensemble, 1 lift)

inline constexpr std::uint32_t kArchiveVersion = 1;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n);

void write_field_archive(const std::string& path, const FieldEnsemble& e);
FieldEnsemble read_field_archive(const std::string& path);

void write_lift_archive(const std::string& path, const LiftEnsemble& e);
LiftEnsemble read_lift_archive(const std::string& path);

}  // namespace rspde
