#pragma once

#include "idiomark/checkpoint.hpp"
#include "idiomark/corpus.hpp"
#include "idiomark/encoder.hpp"
#include "idiomark/errors.hpp"
#include "idiomark/eval.hpp"
#include "idiomark/linalg.hpp"
#include "idiomark/losses.hpp"
#include "idiomark/optimizer.hpp"
#include "idiomark/postprocess.hpp"
#include "idiomark/predictions.hpp"
#include "idiomark/preprocess.hpp"
#include "idiomark/rng.hpp"
#include "idiomark/schedule.hpp"
#include "idiomark/stats.hpp"
#include "idiomark/synthetic.hpp"
#include "idiomark/textutil.hpp"
#include "idiomark/tokenization.hpp"
#include "idiomark/tokenizer.hpp"
#include "idiomark/training.hpp"
