# Command groups for the simulgate CLI
