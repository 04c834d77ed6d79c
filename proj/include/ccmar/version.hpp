#pragma once

#define CCMAR_VERSION_MAJOR 0
#define CCMAR_VERSION_MINOR 1
#define CCMAR_VERSION_PATCH 0
#define CCMAR_VERSION_STRING "0.1.0"

namespace ccmar {

inline const char* version() { return CCMAR_VERSION_STRING; }

}  // namespace ccmar
