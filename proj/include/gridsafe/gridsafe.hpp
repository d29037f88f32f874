#pragma once

#include "audit.hpp"
#include "catalog.hpp"
#include "checksum.hpp"
#include "core.hpp"
#include "facility.hpp"
#include "ingest.hpp"
#include "metadb.hpp"
#include "pipeline.hpp"
#include "policy.hpp"
#include "reports.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "simgrid.hpp"
#include "tapestore.hpp"
