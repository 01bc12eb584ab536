// SPDX-License-Identifier: Apache-2.0
//
// Published weak-scaling measurements of a parallel K-means implementation:
// execution times (seconds) and speedups for 7 problem sizes on 1..512 cores.
// Decimal commas of the source tables are transcribed as decimal points.
#pragma once

#include <array>
#include <cstdint>

namespace granscale::fixture {

inline constexpr std::array<std::int64_t, 7> kProblemSizes = {
    122880, 983040, 1966080, 3932160, 7864320, 15728640, 31457280};

// Columns of the time table: T_1 followed by T_p for these p.
inline constexpr std::array<std::int64_t, 7> kWorkerCounts = {8, 16, 32, 64, 128, 256, 512};

// Row i: T_1, T_8, T_16, T_32, T_64, T_128, T_256, T_512 for kProblemSizes[i].
inline constexpr std::array<std::array<double, 8>, 7> kExecutionTimes = {{
    {2.918, 0.364, 0.182, 0.091, 0.046, 0.023, 0.0064, 0.0047},
    {178.132, 22.240, 11.120, 5.659, 2.779, 1.388, 0.698, 0.345},
    {708.634, 88.522, 44.262, 23.137, 11.063, 5.5308, 2.554, 1.385},
    {2831.905, 318.146, 176.702, 88.353, 44.175, 22.079, 10.240, 5.517},
    {11337.77, 1416.032, 812.677, 353.901, 176.960, 88.462, 38.918, 21.949},
    {45318.33, 5660.593, 2830.199, 1624.234, 707.452, 353.600, 176.745, 88.342},
    {181417.6, 22653.32, 11325.1, 5661.966, 3249.23, 1414.826, 706.802, 353.248},
}};

// Row i: S_8 .. S_512 for kProblemSizes[i].
inline constexpr std::array<std::array<double, 7>, 7> kSpeedups = {{
    {7.946, 15.744, 31.297, 61.302, 117.931, 70.688, 0.0047},
    {7.948, 15.822, 31.431, 62.546, 122.945, 240.221, 408.803},
    {7.972, 15.868, 31.232, 62.909, 125.105, 81.220, 483.412},
    {7.958, 15.843, 31.630, 63.024, 125.784, 100.921, 495.631},
    {7.982, 15.837, 31.672, 62.941, 125.793, 118.578, 475.919},
    {7.913, 15.808, 31.536, 63.008, 125.728, 250.092, 498.543},
    {7.930, 15.883, 31.582, 55.060, 125.540, 125.300, 499.833},
}};

struct AnomalousCell {
  std::int64_t problem_size;
  std::int64_t workers;
  const char* note;
};

// Cells whose published speedup does not follow from the published times.
inline constexpr std::array<AnomalousCell, 9> kAnomalousCells = {{
    {122880, 256, "S_256 = 70.688 but T_1/T_256 = 2.918/0.0064 = 455.9"},
    {122880, 512, "S_512 = 0.0047 repeats T_512 = 0.0047 from the time table"},
    {1966080, 256, "S_256 = 81.220 but T_1/T_256 = 708.634/2.554 = 277.5"},
    {3932160, 256, "S_256 = 100.921 but T_1/T_256 = 2831.905/10.240 = 276.6"},
    {7864320, 256, "S_256 = 118.578 but T_1/T_256 = 11337.77/38.918 = 291.3"},
    {31457280, 256, "S_256 = 125.300 but T_1/T_256 = 181417.6/706.802 = 256.7"},
    // Single off-trend time entries inside the S_8..S_64 range.
    {3932160, 8, "T_8 = 318.146 gives 8.901 vs S_8 = 7.958"},
    {7864320, 16, "T_16 = 812.677 gives 13.951 vs S_16 = 15.837"},
    {15728640, 32, "T_32 = 1624.234 gives 27.901 vs S_32 = 31.536"},
}};

}  // namespace granscale::fixture
