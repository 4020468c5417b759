from models.pomdp.pomdp_models import BeliefState, Pomdp
