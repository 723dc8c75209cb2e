#pragma once

// The library can be built with float (default) or double scalars. Each
// build lives in its own inline namespace so both can be linked into one
// executable.
#ifdef FLAG_REAL_DOUBLE
#define FLAG_ABI_NAMESPACE f64
#else
#define FLAG_ABI_NAMESPACE f32
#endif

#define FLAG_NAMESPACE_BEGIN \
  namespace flag {           \
  inline namespace FLAG_ABI_NAMESPACE {
#define FLAG_NAMESPACE_END \
  }                        \
  }
