from .db_utils import init_database, get_db_session, save_experiment, load_results
from .models import ExperimentRun, ResultRow
