import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'HomogLab.settings')
django.setup()
