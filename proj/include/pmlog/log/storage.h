#pragma once

#include "pmlog/log/layout.h"
#include "pmlog/pmem/region.h"
#include "pmlog/primitives/persist_sink.h"
#include "pmlog/status.h"

namespace pmlog::log {

// Where a log lives. The working region is what the log stores into: real
// PMEM in local modes, a volatile staging copy in remote-only mode. The
// PersistSink side makes working-region ranges durable on every copy the
// storage manages, honouring its write quorum.
class LogStorage : public primitives::PersistSink {
 public:
  virtual pmem::PersistenceRegion& working() = 0;

  // Establishes connections to remote copies, if any.
  virtual Status Connect() = 0;

  // Picks the authoritative copy, bumps its epoch, repairs the others, and
  // leaves that image in the working region. Returns the scan of it.
  virtual Result<ScanResult> Recover() = 0;
};

}  // namespace pmlog::log
