# Engines package — per-card detection pipeline
# window_engine: forgetting window + confidence interval (collapse / reset)
# controller_engine: Monitoring / UnderAttack state machine → Decision
# detection_engine: profile → score → window → controller over many cards
