from models.lp.lp_models import ConstraintKind, ConstraintTag, LpModel, LpSolution, LpStatus, Relation
