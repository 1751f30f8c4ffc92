#pragma once

namespace medrank {

/// Configures the global logger from MEDRANK_LOG={error,warn,info,debug}.
/// Unset or unknown values fall back to warn. Output goes to stderr.
void init_logging_from_env();

}  // namespace medrank
