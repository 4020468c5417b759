from models.controller.controller_models import Controller, Node, SparsityStats, ValueFunction, SELF_LOOP, TransitionKey
