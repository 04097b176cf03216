from .evaluate import cmd_eval
from .experiment import cmd_experiment
from .fit import cmd_fit
from .ingest import cmd_ingest
from .synth import cmd_synth
