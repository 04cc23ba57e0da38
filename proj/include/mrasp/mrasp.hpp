#pragma once

#include "mrasp/analysis.hpp"
#include "mrasp/bleu.hpp"
#include "mrasp/bpe.hpp"
#include "mrasp/checkpoint.hpp"
#include "mrasp/common.hpp"
#include "mrasp/corpus.hpp"
#include "mrasp/decode.hpp"
#include "mrasp/experiment.hpp"
#include "mrasp/model.hpp"
#include "mrasp/optim.hpp"
#include "mrasp/pca.hpp"
#include "mrasp/ras.hpp"
#include "mrasp/rng.hpp"
#include "mrasp/synth.hpp"
#include "mrasp/tensor.hpp"
#include "mrasp/trainer.hpp"
#include "mrasp/vocab.hpp"
