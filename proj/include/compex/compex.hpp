#pragma once

#include "compex/adapter.hpp"
#include "compex/bench.hpp"
#include "compex/classifier.hpp"
#include "compex/engine.hpp"
#include "compex/errors.hpp"
#include "compex/export.hpp"
#include "compex/image.hpp"
#include "compex/image_io.hpp"
#include "compex/oracle.hpp"
#include "compex/responsibility.hpp"
#include "compex/rng.hpp"
#include "compex/suites.hpp"
#include "compex/synthetic.hpp"
#include "compex/wire.hpp"
