# Pipeline stage plug-ins
