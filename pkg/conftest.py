import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'heatflow.settings.development')
django.setup()
