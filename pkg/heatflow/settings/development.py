# Copyright 2020 ETH Zurich
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import os
from .common import *
import huey

# ##### DEBUG CONFIGURATION ###############################
DEBUG = True

# ##### HUEY TASK QUEUE CONFIGURATION #####################
os.makedirs(os.path.join(BASE_DIR, 'run'), exist_ok=True)
HUEY = huey.SqliteHuey('heatflow-huey',
                       filename=os.path.join(BASE_DIR, 'run', 'dev-huey.sqlite3'))

# ##### LOG CONFIGURATION #################################
# Keep test output readable; experiment progress is logged at INFO.
LOGGING['handlers']['console']['level'] = os.environ.get('HEATFLOW_LOG_LEVEL', 'WARNING')
