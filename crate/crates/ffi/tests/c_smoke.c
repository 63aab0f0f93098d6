#include "scenario_mining.h"
#include <stdio.h>

int main(void) {
    SmConfig *cfg = NULL;
    SmCorpus *corpus = NULL;
    SmEngine *engine = NULL;
    if (sm_config_new(NULL, NULL, 0, &cfg) != SM_STATUS_OK) return 1;
    if (sm_corpus_new(&corpus) != SM_STATUS_OK) return 1;
    for (uint64_t seed = 0; seed < 8; ++seed) {
        SmScenario *s = NULL;
        if (sm_scenario_synth(SM_SYNTH_KIND_STOP_AND_GO, seed, &s) != SM_STATUS_OK) return 1;
        sm_corpus_push(corpus, s);
        sm_scenario_free(s);
    }
    if (sm_engine_fit(corpus, cfg, &engine) != SM_STATUS_OK) {
        fprintf(stderr, "%s\n", sm_last_error());
        return 1;
    }
    double v = -1.0;
    if (sm_engine_scene_value(engine, 0, &v) != SM_STATUS_OK) return 1;
    if (sm_engine_scene_value(engine, 8, &v) != SM_STATUS_OUT_OF_RANGE) return 1;
    printf("%s\n", sm_last_error());
    sm_engine_free(engine);
    sm_corpus_free(corpus);
    sm_config_free(cfg);
    return 0;
}
